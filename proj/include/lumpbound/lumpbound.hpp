#pragma once

#include "lumpbound/error.hpp"
#include "lumpbound/chain.hpp"
#include "lumpbound/lumping.hpp"
#include "lumpbound/imprecise.hpp"
#include "lumpbound/inference.hpp"
#include "lumpbound/models.hpp"
#include "lumpbound/report.hpp"
#include "lumpbound/verify.hpp"
