#pragma once

// rsmil: multi-instance learning for event detection over bags of video
// shots. Trains a weighted linear SVM jointly with per-shot reliability
// indicators, guided by a convex combination of visual hinge loss and a
// semantic mismatch penalty derived from shot/event text embeddings.

#include "rsmil/core.hpp"
#include "rsmil/data.hpp"
#include "rsmil/eval.hpp"
#include "rsmil/loss.hpp"
#include "rsmil/selector.hpp"
#include "rsmil/semantics.hpp"
#include "rsmil/svm.hpp"
#include "rsmil/trainer.hpp"
