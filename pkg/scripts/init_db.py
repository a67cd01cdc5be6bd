#!/usr/bin/env python
"""
Initialize the run registry schema for the Seamless Positioning API.
Works against the SQLite default or the PostgreSQL DATABASE_URL on Render.
"""
import os
import sys

# Add parent directory to path for imports
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from app.config import DATABASE_URL
from app.database import RunRecord, init_db


def main():
    """Create all database tables."""
    print("Initializing run registry schema...")
    print(f"Database: {DATABASE_URL.split('@')[-1] if '@' in DATABASE_URL else DATABASE_URL}")

    try:
        init_db()
        columns = ", ".join(c.name for c in RunRecord.__table__.columns)
        print(f"✓ Created table: {RunRecord.__tablename__}")
        print(f"  - Columns: {columns}")
        print("  - Index: idx_run_records_scenario_backend")
        print("\nDatabase initialization complete!")

    except Exception as e:
        print(f"Warning: Could not initialize database: {e}", file=sys.stderr)
        print("Tables will be created on first app startup.")
        sys.exit(0)


if __name__ == "__main__":
    main()
