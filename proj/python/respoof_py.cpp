#include <pybind11/pybind11.h>
PYBIND11_MODULE(_respoof, m) { m.doc() = "stub"; }
