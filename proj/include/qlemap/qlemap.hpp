#pragma once

#include "qlemap/ansatz.hpp"
#include "qlemap/baseline.hpp"
#include "qlemap/classifier.hpp"
#include "qlemap/embedding.hpp"
#include "qlemap/graph.hpp"
#include "qlemap/matrix.hpp"
#include "qlemap/optimizer.hpp"
#include "qlemap/parallel.hpp"
#include "qlemap/pauli.hpp"
#include "qlemap/pipeline.hpp"
#include "qlemap/qsim.hpp"
#include "qlemap/random.hpp"
