#pragma once

#include "ptycho/admm.hpp"
#include "ptycho/baselines.hpp"
#include "ptycho/config.hpp"
#include "ptycho/error.hpp"
#include "ptycho/evaluation.hpp"
#include "ptycho/fft.hpp"
#include "ptycho/field.hpp"
#include "ptycho/forward.hpp"
#include "ptycho/harness.hpp"
#include "ptycho/io.hpp"
#include "ptycho/lattice.hpp"
#include "ptycho/metrics.hpp"
#include "ptycho/parallel.hpp"
#include "ptycho/run.hpp"
