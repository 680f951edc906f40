#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
# spi documentation build configuration file.

import sys
import os

# If extensions (or modules to document with autodoc) are in another directory,
# add these directories to sys.path here.
sys.path.insert(0, os.path.abspath('..'))

from spi import __version__

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.coverage',
    'sphinx.ext.mathjax',
    'sphinx.ext.viewcode',
    'sphinx.ext.intersphinx']

intersphinx_mapping = {'python': ('https://docs.python.org/3', None),
                       'numpy': ('https://numpy.org/doc/stable', None),
                       'scipy': ('https://docs.scipy.org/doc/scipy', None),
                       'pandas': ('https://pandas.pydata.org/docs', None)}

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'spi'

# The short X.Y version.
version = __version__
# The full version, including alpha/beta/rc tags.
release = __version__

exclude_patterns = ['_build']
pygments_style = 'sphinx'

# -- Options for HTML output ----------------------------------------------

html_theme = 'default'
html_static_path = []
htmlhelp_basename = 'spidoc'

# -- Options for manual page output ---------------------------------------

man_pages = [
    ('index', 'spi', u'spi Documentation', [], 1)
]
