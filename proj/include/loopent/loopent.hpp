#pragma once

#include "loopent/conditional.hpp"
#include "loopent/errors.hpp"
#include "loopent/gaussian.hpp"
#include "loopent/linalg.hpp"
#include "loopent/model.hpp"
#include "loopent/parallel.hpp"
#include "loopent/params.hpp"
#include "loopent/sde.hpp"
#include "loopent/transient.hpp"
#include "loopent/verify.hpp"
