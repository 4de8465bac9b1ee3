#pragma once

#include "bpmkit/breakdown.hpp"
#include "bpmkit/embeddings.hpp"
#include "bpmkit/generation.hpp"
#include "bpmkit/harness.hpp"
#include "bpmkit/model.hpp"
#include "bpmkit/similarity.hpp"
#include "bpmkit/text.hpp"
