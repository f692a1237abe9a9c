"""Semi-supervised CAN-bus intrusion detection with a convolutional adversarial autoencoder."""

__version__ = "0.1.0"
