from setuptools import find_packages, setup

with open("requirements.txt", encoding="utf-8") as fh:
    requirements = [line.strip() for line in fh if line.strip() and not line.startswith("pytest")]

setup(
    name="elastic-calderon-lab",
    version="0.1.0",
    description="Numerical lab for the elastic Calderón problem with resonant micro-inclusions",
    packages=find_packages(include=["src", "src.*"]),
    python_requires=">=3.9",
    install_requires=requirements,
    extras_require={"test": ["pytest==7.4.0"]},
    entry_points={"console_scripts": ["elastic-calderon = src.main:main"]},
)
