#pragma once

#include <affect/corpus.hpp>
#include <affect/error.hpp>
#include <affect/eval.hpp>
#include <affect/forest.hpp>
#include <affect/matrix.hpp>
#include <affect/preflearn.hpp>
#include <affect/preprocess.hpp>
#include <affect/random.hpp>
#include <affect/report.hpp>
#include <affect/schema.hpp>
#include <affect/stats.hpp>
#include <affect/synth.hpp>
#include <affect/text.hpp>
