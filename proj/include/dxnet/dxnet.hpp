#pragma once

#include "dxnet/common.hpp"
#include "dxnet/tensor.hpp"
#include "dxnet/autodiff.hpp"
#include "dxnet/ops.hpp"
#include "dxnet/grad_check.hpp"
#include "dxnet/blocks.hpp"
#include "dxnet/config.hpp"
#include "dxnet/data.hpp"
#include "dxnet/model.hpp"
#include "dxnet/io.hpp"
#include "dxnet/checkpoint.hpp"
#include "dxnet/train.hpp"
#include "dxnet/probe.hpp"
#include "dxnet/cli.hpp"
