// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "catsg/errors.hpp"
#include "catsg/hash.hpp"
#include "catsg/ontology.hpp"
#include "catsg/mask.hpp"
#include "catsg/scenegraph.hpp"
#include "catsg/geometry.hpp"
#include "catsg/evaluation.hpp"
#include "catsg/queries.hpp"
#include "catsg/synthdata.hpp"
#include "catsg/nn.hpp"
#include "catsg/checkpoint.hpp"
#include "catsg/relnet.hpp"
#include "catsg/dynamicgraph.hpp"
#include "catsg/gat.hpp"
#include "catsg/downstream.hpp"
