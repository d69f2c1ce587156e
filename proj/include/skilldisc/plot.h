// Copyright 2026 The skilldisc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SKILLDISC_PLOT_H_
#define SKILLDISC_PLOT_H_

#include <string>
#include <vector>

#include "skilldisc/analysis.h"

namespace skilldisc {

// SVG line chart of one metric: a thin trace per run and a thick median
// line. The median is taken over runs at the first run's steps, each run
// linearly interpolated and restricted to the step range all runs cover.
std::string line_chart_svg(const std::string& title, const std::vector<Series>& runs);

// Median across runs as described above, as (steps, values).
Series median_series(const std::vector<Series>& runs);

}  // namespace skilldisc

#endif  // SKILLDISC_PLOT_H_
