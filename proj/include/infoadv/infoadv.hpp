#pragma once

#include "core.hpp"
#include "rng.hpp"
#include "graph.hpp"
#include "autodiff.hpp"
#include "encoder.hpp"
#include "view_generator.hpp"
#include "losses.hpp"
#include "config.hpp"
#include "trainer.hpp"
#include "checkpoint.hpp"
#include "evaluation.hpp"
#include "theory.hpp"
#include "experiments.hpp"
