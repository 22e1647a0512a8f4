#pragma once

#include "vlslice/affinity.hpp"
#include "vlslice/clustering.hpp"
#include "vlslice/embedding_store.hpp"
#include "vlslice/errors.hpp"
#include "vlslice/eval_harness.hpp"
#include "vlslice/prep_geometry.hpp"
#include "vlslice/random.hpp"
#include "vlslice/slicing.hpp"
#include "vlslice/validation.hpp"
