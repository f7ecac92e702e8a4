#pragma once

#include "mvmlp/numerics.hpp"
#include "mvmlp/random.hpp"
#include "mvmlp/models.hpp"
#include "mvmlp/mlp.hpp"
#include "mvmlp/reference.hpp"
#include "mvmlp/parallel.hpp"
#include "mvmlp/bench.hpp"
