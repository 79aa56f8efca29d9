import sys
import os

current_dir = os.path.dirname(os.path.realpath(__file__))

sys.path.insert(0, current_dir)

if __name__ == "__main__":
    from src.main import main

    sys.exit(main())
