#pragma once

#include "p2t2f/admm.hpp"
#include "p2t2f/baselines.hpp"
#include "p2t2f/bench.hpp"
#include "p2t2f/error.hpp"
#include "p2t2f/factors.hpp"
#include "p2t2f/hyperparams.hpp"
#include "p2t2f/io.hpp"
#include "p2t2f/matrix.hpp"
#include "p2t2f/objective.hpp"
#include "p2t2f/report.hpp"
#include "p2t2f/report_json.hpp"
#include "p2t2f/synthetic.hpp"
#include "p2t2f/tensor.hpp"
#include "p2t2f/tridiagonal.hpp"
#include "p2t2f/worker_pool.hpp"
