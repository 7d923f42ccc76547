#pragma once

#include "neat/backward.hpp"
#include "neat/common.hpp"
#include "neat/corpus.hpp"
#include "neat/dataset.hpp"
#include "neat/enumerate.hpp"
#include "neat/evalkit.hpp"
#include "neat/forward.hpp"
#include "neat/loss.hpp"
#include "neat/model.hpp"
#include "neat/optim.hpp"
#include "neat/prompt.hpp"
#include "neat/reward.hpp"
#include "neat/rng.hpp"
#include "neat/sample.hpp"
#include "neat/trainer.hpp"
