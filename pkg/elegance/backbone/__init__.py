# time-domain AV-TSE backbones
