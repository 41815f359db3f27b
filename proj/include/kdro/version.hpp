#pragma once

#define KDRO_VERSION "0.1.0"
