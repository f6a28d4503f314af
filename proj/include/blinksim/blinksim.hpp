#pragma once

#include "emulator.hpp"
#include "error.hpp"
#include "events.hpp"
#include "flow.hpp"
#include "image.hpp"
#include "io.hpp"
#include "manifest.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "rng.hpp"
#include "scene.hpp"
#include "simulator.hpp"
#include "trajectory.hpp"
