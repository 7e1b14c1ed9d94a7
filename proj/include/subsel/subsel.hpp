#pragma once

#include <subsel/errors.hpp>
#include <subsel/linalg.hpp>
#include <subsel/matrix.hpp>
#include <subsel/mcmc.hpp>
#include <subsel/outliers.hpp>
#include <subsel/params.hpp>
#include <subsel/pipeline.hpp>
#include <subsel/random.hpp>
#include <subsel/report.hpp>
#include <subsel/samplers.hpp>
#include <subsel/stream.hpp>
#include <subsel/synthetic.hpp>
