#pragma once

#include "clem/adam.hpp"
#include "clem/analysis.hpp"
#include "clem/data.hpp"
#include "clem/deploy.hpp"
#include "clem/embedder.hpp"
#include "clem/gradcheck.hpp"
#include "clem/model.hpp"
#include "clem/model_io.hpp"
#include "clem/rng.hpp"
#include "clem/sequence.hpp"
#include "clem/serialize.hpp"
#include "clem/tape.hpp"
#include "clem/tensor.hpp"
#include "clem/trainer.hpp"
