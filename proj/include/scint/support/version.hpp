#pragma once

#define SCINT_VERSION "1.0.0"
