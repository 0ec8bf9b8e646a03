# Sphinx configuration for the cardsvm documentation.

import sys, os.path
sys.path.insert(0, os.path.abspath('../..'))

import cardsvm

project = 'cardsvm'
release = cardsvm.__version__
version = release

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.napoleon',
    'sphinx_rtd_theme'
]

autoclass_content = "both"
autodoc_member_order = "bysource"
napoleon_use_param = True

templates_path = ['_templates']
exclude_patterns = []

html_theme = "sphinx_rtd_theme"
html_static_path = ['_static']
