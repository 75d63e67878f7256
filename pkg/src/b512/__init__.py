"""B512 vector ISA toolchain: assembler, functional and cycle-level simulators,
and an NTT kernel generator for the Ring Processing Unit."""

__version__ = "0.1.0"
