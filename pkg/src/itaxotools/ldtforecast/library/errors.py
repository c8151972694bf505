#!/usr/bin/env python3

"""Exception hierarchy shared by all stages. The exit code of each family
is what the command line tool returns when it aborts on it."""


class LdtError(Exception):
    exit_code = 1


class ConfigurationError(LdtError):
    exit_code = 1


class UsageError(LdtError):
    exit_code = 1


class ShapeError(LdtError):
    exit_code = 1


class DataError(LdtError):
    exit_code = 2


class TrainingError(LdtError):
    exit_code = 3
