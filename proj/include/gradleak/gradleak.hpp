#pragma once

#include "gradleak/attack.hpp"
#include "gradleak/data.hpp"
#include "gradleak/errors.hpp"
#include "gradleak/harness.hpp"
#include "gradleak/leakage.hpp"
#include "gradleak/model.hpp"
#include "gradleak/tensor.hpp"
