#include <pybind11/pybind11.h>
PYBIND11_MODULE(_rabot, m) { m.doc() = "stub"; }
