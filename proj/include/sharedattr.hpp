#pragma once

#include "sharedattr/error.hpp"
#include "sharedattr/numerics.hpp"
#include "sharedattr/ceb1.hpp"
#include "sharedattr/attribute_base.hpp"
#include "sharedattr/task_stream.hpp"
#include "sharedattr/assignment.hpp"
#include "sharedattr/attribute_filter.hpp"
#include "sharedattr/adapter.hpp"
#include "sharedattr/refiner.hpp"
#include "sharedattr/inference.hpp"
#include "sharedattr/checkpoint.hpp"
#include "sharedattr/pipeline.hpp"
