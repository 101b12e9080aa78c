# pointaccel documentation build configuration

import pointaccel

project = "pointaccel"
copyright = "2026, pointaccel developers"
author = "pointaccel developers"

version = pointaccel.__version__
release = pointaccel.__version__

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.doctest",
    "sphinx.ext.napoleon",
]

master_doc = "index"
source_suffix = ".rst"
language = "en"

pygments_style = "sphinx"

html_theme = "sphinx_rtd_theme"
html_static_path = ["_static"]
htmlhelp_basename = "pointacceldoc"

# Docstrings document arguments with the Google style
napoleon_numpy_docstring = False
autodoc_member_order = "bysource"
