#pragma once

#include "convo_gate/error.hpp"
#include "convo_gate/random.hpp"
#include "convo_gate/core.hpp"
#include "convo_gate/tokens.hpp"
#include "convo_gate/corpus.hpp"
#include "convo_gate/augment.hpp"
#include "convo_gate/classifier.hpp"
#include "convo_gate/baseline.hpp"
#include "convo_gate/external.hpp"
#include "convo_gate/eval.hpp"
#include "convo_gate/training.hpp"
#include "convo_gate/teacher.hpp"
#include "convo_gate/gateway.hpp"
#include "convo_gate/http_teacher.hpp"
#include "convo_gate/config.hpp"
