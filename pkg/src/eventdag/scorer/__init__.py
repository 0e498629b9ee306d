"""Neural action scorer: parameters, BiLSTM encoder, forward/backward and optimizer."""
