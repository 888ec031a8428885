# Tests package for the IaC compiler
