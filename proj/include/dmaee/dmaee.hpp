// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef DMAEE_DMAEE_HPP
#define DMAEE_DMAEE_HPP

#include "channel.hpp"
#include "common.hpp"
#include "dma.hpp"
#include "instantaneous.hpp"
#include "linalg.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "statistical.hpp"

#endif
