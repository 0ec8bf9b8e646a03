import os
from setuptools import setup

def read(fname):
    return open(os.path.join(os.path.dirname(__file__), fname), "r").read()

def get_version():
    g = {}
    exec(open(os.path.join("cardsvm", "version.py"), "r").read(), g)
    return g["Version"]


setup(
    name = "cardsvm",
    version = get_version(),
    description = ("Feature-budgeted linear SVM: conic relaxations, branch and bound, "
        "kernel search and an exact semi-relaxation procedure"),
    license = "BSD 3-clause",
    keywords = "SVM, feature selection, cardinality constraint, conic optimization, branch and bound",
    packages=['cardsvm', 'harness'],
    long_description=read('README.md'),
    long_description_content_type="text/markdown",
    install_requires=["numpy", "scipy", "pandas", "pyyaml", "pythreader >= 2.5"],
    extras_require={"test": ["pytest"]},
    zip_safe = False,
    classifiers=[
    ],
    entry_points = {
            "console_scripts": [
                "cardsvm = harness.harness:main",
            ]
        }
)
