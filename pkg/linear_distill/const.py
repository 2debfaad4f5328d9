# sysexits(3) codes; the os module lacks them on Windows

EX_OK = 0
EX_DATAERR = 65
EX_NOINPUT = 66
EX_SOFTWARE = 70
EX_CANTCREAT = 73
EX_IOERR = 74
EX_CONFIG = 78

# gradcheck reports failed checks like a test runner
EX_CHECK_FAILED = 1
