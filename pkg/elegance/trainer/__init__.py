# training loop, schedule and gradient verification
