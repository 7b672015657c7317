"""PoFL blocks, the trade ledger and winner election."""
