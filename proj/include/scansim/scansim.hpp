/*
 * Copyright 2026 The scan-sim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SCANSIM_SCANSIM_HPP
#define SCANSIM_SCANSIM_HPP

#include "common.hpp"
#include "fabric.hpp"
#include "host_bench.hpp"
#include "run_config.hpp"
#include "nic_engine.hpp"
#include "packet.hpp"
#include "scan_core.hpp"
#include "schedule.hpp"
#include "software.hpp"

#endif  // SCANSIM_SCANSIM_HPP
