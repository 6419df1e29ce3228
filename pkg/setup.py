#!/usr/bin/env python
"""
ftmlab Setup Script
Creates the virtual environment, installs the numeric stack and prepares the
database and output directory of the FTM positioning simulator.
"""

import os
import sys
import subprocess
import secrets
from pathlib import Path


def run_command(command, description):
    """Run a shell command and handle errors."""
    print(f"\n🔄 {description}...")
    try:
        result = subprocess.run(command, shell=True, check=True,
                                capture_output=True, text=True)
        print(f"✅ {description} completed successfully")
        return result
    except subprocess.CalledProcessError as e:
        print(f"❌ Error during {description}:")
        print(f"   Command: {command}")
        print(f"   Error: {e.stderr}")
        return None


def venv_tool(name):
    if os.name == 'nt':  # Windows
        return f"venv\\Scripts\\{name}"
    return f"venv/bin/{name}"


def create_env_file():
    """Create .env file with the simulator defaults."""
    print("\n🔄 Creating .env file...")

    env_content = f"""# ftmlab Environment Configuration
# Generated by setup script

# Django Settings
SECRET_KEY={secrets.token_urlsafe(50)}
DEBUG=True
ALLOWED_HOSTS=localhost,127.0.0.1

# Database (default: SQLite)
DATABASE_URL=sqlite:///db.sqlite3

# Channel estimation
FTM_GOLAY_LENGTH=128
FTM_TAP_RELATIVE_THRESHOLD=0.05
FTM_TAP_NOISE_FACTOR=8.0

# Beam training
FTM_AWV_GROUP_SIZE=2
FTM_FINE_SPAN_DEG=15.0
FTM_FINE_STEP_DEG=2.5
FTM_COARSE_SECTORS=16

# FTM session
FTM_NEGOTIATION_DEADLINE_MS=10.0
FTM_EXCHANGES_PER_BURST=3
FTM_TIMESTAMP_JITTER_PS=50.0

# Where the management commands write CSV files
FTM_OUTPUT_DIR=output
"""

    env_path = Path('.env')
    if env_path.exists():
        print("⚠️  .env file already exists. Backing up to .env.backup")
        env_path.rename('.env.backup')

    with open('.env', 'w') as f:
        f.write(env_content)

    print("✅ .env file created successfully")


def check_python_version():
    """Check if Python version is compatible."""
    print("🔍 Checking Python version...")
    version = sys.version_info
    if version.major < 3 or (version.major == 3 and version.minor < 10):
        print("❌ Python 3.10 or higher is required")
        print(f"   Current version: {version.major}.{version.minor}.{version.micro}")
        return False
    print(f"✅ Python {version.major}.{version.minor}.{version.micro} is compatible")
    return True


def setup_virtual_environment():
    if os.path.exists('venv'):
        print("⚠️  Virtual environment already exists, skipping creation")
        return True
    return run_command("python -m venv venv", "Creating virtual environment") is not None


def install_dependencies():
    return run_command(f"{venv_tool('pip')} install -r requirements.txt",
                       "Installing dependencies") is not None


def setup_database():
    """Apply migrations for the experiment run store."""
    return run_command(f"{venv_tool('python')} manage.py migrate",
                       "Applying database migrations") is not None


def smoke_run():
    """One noiseless repetition of the room scenario"""
    return run_command(f"{venv_tool('python')} manage.py reproduce_fig4 --repetitions 1 --noise none",
                       "Running a noiseless room scenario") is not None


def main():
    print("🚀 ftmlab Setup Script")
    print("=" * 50)

    if not Path('manage.py').exists():
        print("❌ manage.py not found. Please run this script from the project root directory.")
        sys.exit(1)

    if not check_python_version():
        sys.exit(1)

    create_env_file()
    Path('output').mkdir(exist_ok=True)
    Path('logs').mkdir(exist_ok=True)

    if not setup_virtual_environment():
        print("❌ Failed to create virtual environment")
        sys.exit(1)

    if not install_dependencies():
        print("❌ Failed to install dependencies")
        sys.exit(1)

    if not setup_database():
        print("❌ Failed to setup database")
        sys.exit(1)

    if not smoke_run():
        print("⚠️  Smoke run failed; check logs/ftmlab.log")

    print("\n" + "=" * 50)
    print("🎉 Setup completed successfully!")
    print("\n📋 Next steps:")
    if os.name == 'nt':
        print("   1. Activate virtual environment: venv\\Scripts\\activate")
    else:
        print("   1. Activate virtual environment: source venv/bin/activate")
    print("   2. Reproduce the room experiment: python manage.py reproduce_fig4 --out output")
    print("   3. Compare with other technologies: python manage.py compare --out output")
    print("   4. Run the tests: pytest")
    print("\n📖 Read README.md for the scenario file format")


if __name__ == "__main__":
    main()
