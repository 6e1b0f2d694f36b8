#include "ndyn/errors.hpp"
