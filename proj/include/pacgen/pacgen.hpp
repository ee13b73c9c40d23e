#pragma once

#include "pacgen/autodiff.hpp"
#include "pacgen/bounds.hpp"
#include "pacgen/config.hpp"
#include "pacgen/error.hpp"
#include "pacgen/ipm.hpp"
#include "pacgen/lipnet.hpp"
#include "pacgen/optim.hpp"
#include "pacgen/probdist.hpp"
#include "pacgen/rng.hpp"
#include "pacgen/synthdata.hpp"
#include "pacgen/trainer.hpp"
