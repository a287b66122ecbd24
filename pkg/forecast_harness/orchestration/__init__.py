"""Governed loop, strategy lines, scripted roles and run reporting."""
