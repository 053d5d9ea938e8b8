#pragma once

// Umbrella header for the whole library.

#include "trawl/binio.hpp"
#include "trawl/bm25.hpp"
#include "trawl/corpus.hpp"
#include "trawl/embedding.hpp"
#include "trawl/errors.hpp"
#include "trawl/evaluation.hpp"
#include "trawl/fusion.hpp"
#include "trawl/http_backends.hpp"
#include "trawl/llm_client.hpp"
#include "trawl/pipeline.hpp"
#include "trawl/preprocess.hpp"
#include "trawl/query_expand.hpp"
#include "trawl/rerank.hpp"
#include "trawl/scored_list.hpp"
#include "trawl/train.hpp"
#include "trawl/vector_index.hpp"
