import sys
from qrclab.cli import main
sys.exit(main())
