#!/usr/bin/env python3
"""
tailcert entry point.

    python main.py certify --model net.json --latent gaussian:d=64,sigma=I --out cert.json
    python main.py push --model net.json --latent gaussian:d=64,sigma=I --n 10000 --seed 1 --out x.csv
    python main.py audit --samples x.csv --cert cert.json --out-json r.json --out-csv r.csv
"""

from dotenv import load_dotenv

# Load environment variables first
load_dotenv()

from tailcert.cli import main

if __name__ == "__main__":
    main()
