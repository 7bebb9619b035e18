#ifndef AVREFINE_AVREFINE_HPP
#define AVREFINE_AVREFINE_HPP

#include "avrefine/asd_fusion.hpp"
#include "avrefine/ctcseg.hpp"
#include "avrefine/error.hpp"
#include "avrefine/meld_schema.hpp"
#include "avrefine/parallel.hpp"
#include "avrefine/pipeline.hpp"
#include "avrefine/stages.hpp"
#include "avrefine/synth.hpp"
#include "avrefine/timeline.hpp"
#include "avrefine/tracks.hpp"
#include "avrefine/transcript.hpp"

#endif // AVREFINE_AVREFINE_HPP
