#pragma once

#include "tweetprof/cli.hpp"
#include "tweetprof/corpus.hpp"
#include "tweetprof/error.hpp"
#include "tweetprof/eval.hpp"
#include "tweetprof/gbdt.hpp"
#include "tweetprof/io.hpp"
#include "tweetprof/profile.hpp"
#include "tweetprof/recurrent.hpp"
#include "tweetprof/rng.hpp"
#include "tweetprof/text.hpp"
