"""Analysis toolkit for 802.11 MAC address randomization and derandomization."""

from macrand.address import AddressClass, MacAddress, PrefixRegistry, classify_bits, strip_local_bit

__version__ = "0.1.0"

__all__ = ["AddressClass", "MacAddress", "PrefixRegistry", "classify_bits", "strip_local_bit", "__version__"]
