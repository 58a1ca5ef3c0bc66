#pragma once

#include "gliomakit/netkit/builders.hpp"
#include "gliomakit/netkit/graph.hpp"
#include "gliomakit/netkit/layers.hpp"
#include "gliomakit/netkit/tensor.hpp"
#include "gliomakit/netkit/training.hpp"
