# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

from setuptools import setup


def long_description():
    from os import path

    this_directory = path.abspath(path.dirname(__file__))
    with open(path.join(this_directory, "README.md")) as readme_f:
        contents = readme_f.read()
        return contents


def version():
    from os import path

    this_directory = path.abspath(path.dirname(__file__))
    with open(path.join(this_directory, "pumpshape", "__init__.py")) as f:
        for line in f:
            if line.startswith("__version__"):
                return line.split("=")[1].strip().strip('"')
    raise RuntimeError("no __version__ in pumpshape/__init__.py")


setup(
    name="pumpshape",
    version=version(),
    description="Pump wavefront shaping of entangled photon pairs through scattering media and turbulence",
    packages=["pumpshape"],
    long_description=long_description(),
    long_description_content_type="text/markdown",
    setup_requires=["wheel"],
    python_requires=">=3.8",
    install_requires=[
        "numpy>=1.20",
        "scipy>=1.7",
        "pyyaml>=5.4",
        "notanorm>=3",
        "sqlglot>=10.5.6,<30",
    ],
    extras_require={"plot": ["matplotlib>=3.3"]},
    entry_points={"console_scripts": ["pumpshape=pumpshape.cli:main"]},
)
