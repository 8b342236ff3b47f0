from revadapter.cli import main

main()
