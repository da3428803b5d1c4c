#pragma once

// Umbrella header: the whole library in one include.

#include "tlsrec/commands.hpp"
#include "tlsrec/config.hpp"
#include "tlsrec/dataset.hpp"
#include "tlsrec/error.hpp"
#include "tlsrec/evaluation.hpp"
#include "tlsrec/model.hpp"
#include "tlsrec/rng.hpp"
#include "tlsrec/tensor.hpp"
#include "tlsrec/training.hpp"
