#ifndef CONELAB_CONELAB_HPP
#define CONELAB_CONELAB_HPP

#include "conelab/core.hpp"
#include "conelab/weights.hpp"
#include "conelab/ode.hpp"
#include "conelab/geometry.hpp"
#include "conelab/operators.hpp"
#include "conelab/radial.hpp"
#include "conelab/selfsimilar.hpp"
#include "conelab/frequency.hpp"
#include "conelab/asymptotics.hpp"
#include "conelab/experiment.hpp"

#endif
