from ammlab.cli import main

raise SystemExit(main())
