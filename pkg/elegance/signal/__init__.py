# waveform arithmetic, mixing and metrics
