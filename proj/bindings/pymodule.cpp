#include <pybind11/pybind11.h>
PYBIND11_MODULE(_ogpp, m) { m.doc() = "placeholder"; }
