#pragma once

#include "pcg/error.hpp"
#include "pcg/numeric.hpp"
#include "pcg/random.hpp"
#include "pcg/circuit.hpp"
#include "pcg/inference.hpp"
#include "pcg/learning.hpp"
#include "pcg/random_circuit.hpp"
#include "pcg/diffusion.hpp"
#include "pcg/guidance.hpp"
#include "pcg/latent.hpp"
#include "pcg/binary_io.hpp"
#include "pcg/circuit_io.hpp"
#include "pcg/dataset_io.hpp"
#include "pcg/image_io.hpp"
#include "pcg/toy_data.hpp"
#include "pcg/stats.hpp"
#include "pcg/bench.hpp"
