#pragma once

#include "dardkit/attacks.hpp"
#include "dardkit/checkpoint.hpp"
#include "dardkit/data.hpp"
#include "dardkit/distill.hpp"
#include "dardkit/error.hpp"
#include "dardkit/eval.hpp"
#include "dardkit/model.hpp"
#include "dardkit/objectives.hpp"
#include "dardkit/tensor.hpp"
