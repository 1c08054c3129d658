#ifndef AIRNET_AIRNET_HPP
#define AIRNET_AIRNET_HPP

#include "airnet/attention.hpp"
#include "airnet/checkpoint.hpp"
#include "airnet/common.hpp"
#include "airnet/decoder.hpp"
#include "airnet/encoder.hpp"
#include "airnet/extraction.hpp"
#include "airnet/geometry.hpp"
#include "airnet/metrics.hpp"
#include "airnet/model.hpp"
#include "airnet/nn.hpp"
#include "airnet/rng.hpp"
#include "airnet/runconfig.hpp"
#include "airnet/synthdata.hpp"
#include "airnet/tensor.hpp"
#include "airnet/training.hpp"

#endif
