from setuptools import setup, find_packages

setup(
    name="dlcz_pair_sim",
    version="1.0.0",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    install_requires=[
        "numpy>=1.24.0",
        "scipy>=1.10.0",
        "pydantic>=2.0.0",
        "pyyaml>=6.0.0",
        "pandas>=2.0.0",
        "pytest>=7.0.0",
        "hypothesis>=6.80.0",
        "black>=23.0.0",
        "ruff>=0.1.0",
        "pre-commit>=3.0.0",
    ],
    entry_points={
        "console_scripts": [
            "dlcz-sim=src.cli:main",
        ]
    },
)
