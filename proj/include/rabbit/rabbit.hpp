#pragma once

#include "calibration.hpp"
#include "config.hpp"
#include "controller.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "image.hpp"
#include "limb.hpp"
#include "perception.hpp"
#include "planner.hpp"
#include "render.hpp"
#include "rng.hpp"
#include "robot.hpp"
#include "scene.hpp"
#include "scrubby.hpp"
#include "sensor.hpp"
#include "task.hpp"
#include "trial.hpp"
