"""Project setup script."""

from setuptools import setup, find_packages

setup(
    name="lca-net",
    version="0.1.0",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    include_package_data=True,
    install_requires=[
        "numpy>=1.26.0",
        "SQLAlchemy>=2.0.23",
        "python-dotenv>=1.0.0",
        "click>=8.1.7",
        "nltk>=3.8.1",
        "scikit-learn>=1.3.2",
        "gensim>=4.3.2",
    ],
    entry_points={
        "console_scripts": ["lca-net=lca_net.cli:main"],
    },
)
