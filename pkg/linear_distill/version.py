__version__ = "0.3.0"


if __name__ == "__main__":
    print(__version__)
