// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nerfsup/error.hpp"
#include "nerfsup/rng.hpp"
#include "nerfsup/parallel.hpp"
#include "nerfsup/io.hpp"
#include "nerfsup/geometry.hpp"
#include "nerfsup/image.hpp"
#include "nerfsup/field.hpp"
#include "nerfsup/renderer.hpp"
#include "nerfsup/scene.hpp"
#include "nerfsup/optimizer.hpp"
#include "nerfsup/fixtures.hpp"
#include "nerfsup/correspondence.hpp"
#include "nerfsup/descriptor.hpp"
#include "nerfsup/metrics.hpp"
#include "nerfsup/dataio.hpp"
#include "nerfsup/cli.hpp"
