# This file marks the api directory as a Python package. 