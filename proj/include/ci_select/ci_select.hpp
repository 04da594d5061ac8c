#pragma once

#include "ci_select/analysis.hpp"
#include "ci_select/commands.hpp"
#include "ci_select/config.hpp"
#include "ci_select/corpus.hpp"
#include "ci_select/dsp.hpp"
#include "ci_select/embed.hpp"
#include "ci_select/error.hpp"
#include "ci_select/hsic.hpp"
#include "ci_select/parallel.hpp"
#include "ci_select/pseudolabels.hpp"
#include "ci_select/report.hpp"
