#pragma once

#include "asymptotics.hpp"
#include "chsck.hpp"
#include "errors.hpp"
#include "hessian.hpp"
#include "instance.hpp"
#include "kac_rice.hpp"
#include "loss.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "simulate.hpp"
#include "spectrum.hpp"
