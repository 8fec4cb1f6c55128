#pragma once

#include "inklab/attention_model.hpp"
#include "inklab/category.hpp"
#include "inklab/context_builder.hpp"
#include "inklab/errors.hpp"
#include "inklab/head_analysis.hpp"
#include "inklab/io.hpp"
#include "inklab/metrics.hpp"
#include "inklab/random.hpp"
