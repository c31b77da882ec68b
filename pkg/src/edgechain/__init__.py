"""Edge-IoT governance simulator: hash-chained ledger, contract engine,
dynamic-pricing admission and a timeslot experiment harness."""

__version__ = "0.1.0"
