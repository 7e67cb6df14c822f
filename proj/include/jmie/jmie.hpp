#pragma once

// Umbrella header for the joint longitudinal-survival library.

#include <jmie/benchmark.hpp>
#include <jmie/core_data.hpp>
#include <jmie/dataset_io.hpp>
#include <jmie/diagnostics.hpp>
#include <jmie/evaluation.hpp>
#include <jmie/fitted_model.hpp>
#include <jmie/inference.hpp>
#include <jmie/longitudinal.hpp>
#include <jmie/model_spec.hpp>
#include <jmie/prediction.hpp>
#include <jmie/quadrature.hpp>
#include <jmie/random.hpp>
#include <jmie/simulation.hpp>
#include <jmie/spline.hpp>
#include <jmie/survival.hpp>
