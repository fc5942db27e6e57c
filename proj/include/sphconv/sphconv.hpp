#ifndef SPHCONV_SPHCONV_HPP_
#define SPHCONV_SPHCONV_HPP_

#include "sphconv/batchnorm.hpp"
#include "sphconv/bench.hpp"
#include "sphconv/checkpoint.hpp"
#include "sphconv/data_io.hpp"
#include "sphconv/error.hpp"
#include "sphconv/geometry.hpp"
#include "sphconv/kernel.hpp"
#include "sphconv/network.hpp"
#include "sphconv/octree.hpp"
#include "sphconv/rng.hpp"
#include "sphconv/training.hpp"

#endif  // SPHCONV_SPHCONV_HPP_
