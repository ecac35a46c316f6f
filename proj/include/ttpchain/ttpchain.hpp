#pragma once

#include "ttpchain/apriori.hpp"
#include "ttpchain/attack_kb.hpp"
#include "ttpchain/corpus.hpp"
#include "ttpchain/ctfidf.hpp"
#include "ttpchain/discourse.hpp"
#include "ttpchain/embeddings.hpp"
#include "ttpchain/error.hpp"
#include "ttpchain/features.hpp"
#include "ttpchain/gbdt.hpp"
#include "ttpchain/markers.hpp"
#include "ttpchain/metrics.hpp"
#include "ttpchain/patterns.hpp"
#include "ttpchain/pipeline.hpp"
#include "ttpchain/relation.hpp"
#include "ttpchain/relation_classifier.hpp"
#include "ttpchain/text.hpp"
