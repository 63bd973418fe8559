"""Digital twin toolkit for laser powder-bed fusion melt pools."""

__version__ = "0.1.0"
