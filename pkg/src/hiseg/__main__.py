import sys
from hiseg.cli import main
sys.exit(main())
